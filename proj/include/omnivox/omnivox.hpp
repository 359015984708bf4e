#pragma once

#include "omnivox/captions.hpp"
#include "omnivox/encoder.hpp"
#include "omnivox/error.hpp"
#include "omnivox/media.hpp"
#include "omnivox/omt.hpp"
#include "omnivox/prune.hpp"
#include "omnivox/random.hpp"
#include "omnivox/rope.hpp"
#include "omnivox/run_config.hpp"
#include "omnivox/tensor.hpp"
#include "omnivox/trainer.hpp"
