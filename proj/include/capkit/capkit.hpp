#pragma once

#include "capkit/augment.hpp"
#include "capkit/cleanse.hpp"
#include "capkit/corpus.hpp"
#include "capkit/errors.hpp"
#include "capkit/features.hpp"
#include "capkit/image.hpp"
#include "capkit/metrics.hpp"
#include "capkit/rng.hpp"
#include "capkit/seq2seq.hpp"
#include "capkit/stemmer.hpp"
#include "capkit/text.hpp"
#include "capkit/tsne.hpp"
