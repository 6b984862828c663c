#pragma once

#include "tabattr/ablation.hpp"
#include "tabattr/attribution.hpp"
#include "tabattr/baselines.hpp"
#include "tabattr/data.hpp"
#include "tabattr/errors.hpp"
#include "tabattr/experiment.hpp"
#include "tabattr/model.hpp"
#include "tabattr/numerics.hpp"
