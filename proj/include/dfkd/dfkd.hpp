#pragma once

// Umbrella header.

#include "dfkd/adam.hpp"
#include "dfkd/binfile.hpp"
#include "dfkd/checkpoint.hpp"
#include "dfkd/errors.hpp"
#include "dfkd/evaluate.hpp"
#include "dfkd/experiment.hpp"
#include "dfkd/losses.hpp"
#include "dfkd/mmwave.hpp"
#include "dfkd/models.hpp"
#include "dfkd/pipelines.hpp"
#include "dfkd/rng.hpp"
#include "dfkd/runlog.hpp"
#include "dfkd/scenario.hpp"
#include "dfkd/tensor.hpp"
