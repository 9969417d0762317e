#pragma once

#include "l2o/baseline_opt.hpp"
#include "l2o/core.hpp"
#include "l2o/evalharness.hpp"
#include "l2o/gps.hpp"
#include "l2o/lqg.hpp"
#include "l2o/objective.hpp"
#include "l2o/objfn.hpp"
#include "l2o/optmdp.hpp"
#include "l2o/policy_net.hpp"
