#pragma once

#include "emoscene/error.hpp"
#include "emoscene/numeric.hpp"
#include "emoscene/annotation.hpp"
#include "emoscene/corpus.hpp"
#include "emoscene/image.hpp"
#include "emoscene/color.hpp"
#include "emoscene/parallel.hpp"
#include "emoscene/perceptual.hpp"
#include "emoscene/curation.hpp"
#include "emoscene/affect.hpp"
#include "emoscene/stats.hpp"
#include "emoscene/losses.hpp"
#include "emoscene/metrics.hpp"
#include "emoscene/hitl.hpp"
#include "emoscene/config.hpp"
