#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (C) 2023 The eoscascade Authors
#
# SPDX-License-Identifier: LGPL-2.1+


class ConfigurationError(Exception):
    pass


class ContractError(Exception):
    pass


class UndefinedRateError(Exception):
    pass


class SchemaError(Exception):
    pass
