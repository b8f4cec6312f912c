#pragma once

#include "mr2/binary_io.hpp"
#include "mr2/bound_report.hpp"
#include "mr2/bounds.hpp"
#include "mr2/checkpoint.hpp"
#include "mr2/config.hpp"
#include "mr2/datagen.hpp"
#include "mr2/errors.hpp"
#include "mr2/eval_metrics.hpp"
#include "mr2/feature_stats.hpp"
#include "mr2/gradcheck.hpp"
#include "mr2/linalg.hpp"
#include "mr2/losses.hpp"
#include "mr2/margin_schedule.hpp"
#include "mr2/model.hpp"
#include "mr2/objective.hpp"
#include "mr2/rng.hpp"
#include "mr2/trainer.hpp"
