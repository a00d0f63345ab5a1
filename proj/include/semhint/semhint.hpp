#pragma once

#include "semhint/arch.hpp"
#include "semhint/geometry.hpp"
#include "semhint/loss_gradients.hpp"
#include "semhint/losses.hpp"
#include "semhint/metrics.hpp"
#include "semhint/parallel.hpp"
#include "semhint/refine.hpp"
#include "semhint/synth.hpp"
#include "semhint/tensor.hpp"
#include "semhint/tensor_io.hpp"
