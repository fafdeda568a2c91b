// Copyright (c) 2026 The polynet authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "polynet/blocks.hpp"
#include "polynet/checkpoint.hpp"
#include "polynet/cli.hpp"
#include "polynet/config.hpp"
#include "polynet/data.hpp"
#include "polynet/degree.hpp"
#include "polynet/dropblock.hpp"
#include "polynet/init.hpp"
#include "polynet/network.hpp"
#include "polynet/norm.hpp"
#include "polynet/ops.hpp"
#include "polynet/presets.hpp"
#include "polynet/rng.hpp"
#include "polynet/smoothing.hpp"
#include "polynet/tensor.hpp"
#include "polynet/trainer.hpp"
#include "polynet/verify.hpp"
#include "polynet/verify_suites.hpp"
