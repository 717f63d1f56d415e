// Copyright (c) 2026 The unspeech-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include "unspeech/adam.hpp"
#include "unspeech/audio.hpp"
#include "unspeech/checkpoint.hpp"
#include "unspeech/common.hpp"
#include "unspeech/corpus.hpp"
#include "unspeech/eer.hpp"
#include "unspeech/fbank.hpp"
#include "unspeech/fft.hpp"
#include "unspeech/hdbscan.hpp"
#include "unspeech/inference.hpp"
#include "unspeech/loss.hpp"
#include "unspeech/model.hpp"
#include "unspeech/objective.hpp"
#include "unspeech/partition_metrics.hpp"
#include "unspeech/sampling.hpp"
#include "unspeech/synthetic.hpp"
#include "unspeech/trainer.hpp"
