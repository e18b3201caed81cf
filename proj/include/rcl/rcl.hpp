#pragma once

#include "rcl/common.hpp"
#include "rcl/data.hpp"
#include "rcl/generator.hpp"
#include "rcl/classifier.hpp"
#include "rcl/eval.hpp"
#include "rcl/continual.hpp"
#include "rcl/report.hpp"
