#pragma once

// Dilated-convolution classifier for multivariate time series: windowed
// accelerometer segments treated as one-channel images, a stack of dilated
// and row-preserving strided convolutions, and a softmax head trained with
// Adam, cross-entropy and L2.

#include "dcnn/adam.hpp"
#include "dcnn/cli.hpp"
#include "dcnn/dataset.hpp"
#include "dcnn/errors.hpp"
#include "dcnn/manifest.hpp"
#include "dcnn/metrics.hpp"
#include "dcnn/model.hpp"
#include "dcnn/ops.hpp"
#include "dcnn/rng.hpp"
#include "dcnn/serialize.hpp"
#include "dcnn/tensor.hpp"
#include "dcnn/trainer.hpp"
