// Copyright 2026 The contam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "contam/baselines.hpp"
#include "contam/data_model.hpp"
#include "contam/error.hpp"
#include "contam/harness.hpp"
#include "contam/kds.hpp"
#include "contam/kernel.hpp"
#include "contam/random.hpp"
#include "contam/report.hpp"
#include "contam/stats.hpp"
#include "contam/synth.hpp"
