// Copyright 2026 The alc Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "alc/active_loop.hpp"
#include "alc/budget.hpp"
#include "alc/coco_io.hpp"
#include "alc/consensus.hpp"
#include "alc/correction.hpp"
#include "alc/data_model.hpp"
#include "alc/detector.hpp"
#include "alc/error.hpp"
#include "alc/eval.hpp"
#include "alc/experiment.hpp"
#include "alc/geometry.hpp"
#include "alc/json_io.hpp"
#include "alc/lsm.hpp"
#include "alc/noise_sim.hpp"
#include "alc/pipeline.hpp"
#include "alc/review_service.hpp"
#include "alc/review_store.hpp"
#include "alc/rng.hpp"
