#pragma once

#include "lineqcox/constraints.hpp"
#include "lineqcox/cox_inference.hpp"
#include "lineqcox/errors.hpp"
#include "lineqcox/eval_metrics.hpp"
#include "lineqcox/finite_gp.hpp"
#include "lineqcox/io.hpp"
#include "lineqcox/kernel.hpp"
#include "lineqcox/point_process.hpp"
#include "lineqcox/tmvn.hpp"
