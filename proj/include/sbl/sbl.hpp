#pragma once

#include "sbl/em.hpp"
#include "sbl/fast.hpp"
#include "sbl/field.hpp"
#include "sbl/harness.hpp"
#include "sbl/model.hpp"
#include "sbl/priors.hpp"
#include "sbl/problem_io.hpp"
#include "sbl/random.hpp"
#include "sbl/specfun.hpp"
#include "sbl/vmp.hpp"
