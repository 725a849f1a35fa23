#pragma once

#include "spectranet/tensor.hpp"
#include "spectranet/autodiff.hpp"
#include "spectranet/ops.hpp"
#include "spectranet/fft.hpp"
#include "spectranet/spectral.hpp"
#include "spectranet/parameters.hpp"
#include "spectranet/model.hpp"
#include "spectranet/checkpoint.hpp"
#include "spectranet/simulate.hpp"
#include "spectranet/stats.hpp"
#include "spectranet/evaluate.hpp"
#include "spectranet/train.hpp"
#include "spectranet/bench.hpp"
#include "spectranet/oracles.hpp"
