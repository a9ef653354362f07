#pragma once

#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "image.hpp"
#include "log.hpp"
#include "nn/model_io.hpp"
#include "nn/network.hpp"
#include "nn/train.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "png_io.hpp"
#include "propagate.hpp"
#include "random.hpp"
#include "superpixel.hpp"
#include "synth.hpp"
