#pragma once

#include "tinydet/anchors.hpp"
#include "tinydet/bench.hpp"
#include "tinydet/boxes.hpp"
#include "tinydet/decode.hpp"
#include "tinydet/errors.hpp"
#include "tinydet/eval.hpp"
#include "tinydet/image_io.hpp"
#include "tinydet/layers.hpp"
#include "tinydet/network.hpp"
#include "tinydet/tensor.hpp"
#include "tinydet/train.hpp"
