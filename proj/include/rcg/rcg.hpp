#pragma once

#include "rcg/error.hpp"
#include "rcg/specfun.hpp"
#include "rcg/kibble.hpp"
#include "rcg/model.hpp"
#include "rcg/optim.hpp"
#include "rcg/fitter.hpp"
#include "rcg/data.hpp"
#include "rcg/pipeline.hpp"
#include "rcg/sim.hpp"
