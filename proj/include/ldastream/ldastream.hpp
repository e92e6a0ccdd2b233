#pragma once

// Umbrella header for the full library.

#include "ldastream/checkpoint.hpp"
#include "ldastream/corpus.hpp"
#include "ldastream/driver.hpp"
#include "ldastream/ep.hpp"
#include "ldastream/eval.hpp"
#include "ldastream/expfam.hpp"
#include "ldastream/metrics.hpp"
#include "ldastream/sda.hpp"
#include "ldastream/ssu.hpp"
#include "ldastream/svi.hpp"
#include "ldastream/synth.hpp"
#include "ldastream/vb.hpp"
