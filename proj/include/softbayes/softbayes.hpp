#pragma once

#include "softbayes/comparators.hpp"
#include "softbayes/core.hpp"
#include "softbayes/generators.hpp"
#include "softbayes/harness.hpp"
#include "softbayes/learners.hpp"
#include "softbayes/rates.hpp"
#include "softbayes/stream_io.hpp"
#include "softbayes/verify.hpp"
