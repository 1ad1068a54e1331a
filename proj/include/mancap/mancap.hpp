#pragma once

#include "mancap/capacity.hpp"
#include "mancap/dataset.hpp"
#include "mancap/digest.hpp"
#include "mancap/embx.hpp"
#include "mancap/error.hpp"
#include "mancap/manifold_set.hpp"
#include "mancap/pipeline.hpp"
#include "mancap/report.hpp"
#include "mancap/rng.hpp"
#include "mancap/separability.hpp"
#include "mancap/stats.hpp"
#include "mancap/synth.hpp"
