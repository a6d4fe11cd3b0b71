#pragma once

#include "avqvc/audio.hpp"
#include "avqvc/conversion.hpp"
#include "avqvc/corpus.hpp"
#include "avqvc/dataset.hpp"
#include "avqvc/evaluation.hpp"
#include "avqvc/frontend.hpp"
#include "avqvc/losses.hpp"
#include "avqvc/model.hpp"
#include "avqvc/objective.hpp"
#include "avqvc/synthetic.hpp"
#include "avqvc/training.hpp"
#include "avqvc/vq.hpp"

namespace avqvc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace avqvc
