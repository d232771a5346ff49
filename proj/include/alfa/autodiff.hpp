#pragma once

#include "alfa/autodiff/grad.hpp"
#include "alfa/autodiff/ops.hpp"
#include "alfa/autodiff/tensor.hpp"
