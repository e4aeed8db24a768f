#pragma once

#include "pagty/attention_gates.hpp"
#include "pagty/checkpoint.hpp"
#include "pagty/config.hpp"
#include "pagty/conv_blocks.hpp"
#include "pagty/data.hpp"
#include "pagty/encoder.hpp"
#include "pagty/errors.hpp"
#include "pagty/loss.hpp"
#include "pagty/metrics.hpp"
#include "pagty/model.hpp"
#include "pagty/rng.hpp"
#include "pagty/tensor.hpp"
#include "pagty/train.hpp"
#include "pagty/transformer.hpp"
