#pragma once

#include "voxtasnet/audio.hpp"
#include "voxtasnet/budget.hpp"
#include "voxtasnet/config.hpp"
#include "voxtasnet/dataset.hpp"
#include "voxtasnet/error.hpp"
#include "voxtasnet/eval.hpp"
#include "voxtasnet/loss.hpp"
#include "voxtasnet/metrics.hpp"
#include "voxtasnet/model.hpp"
#include "voxtasnet/ops.hpp"
#include "voxtasnet/streaming.hpp"
#include "voxtasnet/tensor.hpp"
#include "voxtasnet/wav.hpp"
#include "voxtasnet/weights.hpp"
