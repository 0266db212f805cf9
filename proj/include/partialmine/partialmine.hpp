// Copyright 2026 The PartialMine Authors
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

#include "partialmine/core.hpp"
#include "partialmine/datagen.hpp"
#include "partialmine/error.hpp"
#include "partialmine/experiment.hpp"
#include "partialmine/losses.hpp"
#include "partialmine/metrics.hpp"
#include "partialmine/nn/gradcheck.hpp"
#include "partialmine/nn/model.hpp"
#include "partialmine/nn/optim.hpp"
#include "partialmine/nn/serialize.hpp"
#include "partialmine/rng.hpp"
#include "partialmine/trainer.hpp"
