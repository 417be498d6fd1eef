#pragma once

#include "dmbn/numcore/adam.hpp"
#include "dmbn/numcore/binio.hpp"
#include "dmbn/numcore/ops.hpp"
#include "dmbn/numcore/parameter.hpp"
#include "dmbn/numcore/rng.hpp"
#include "dmbn/numcore/tape.hpp"
#include "dmbn/numcore/tensor.hpp"
