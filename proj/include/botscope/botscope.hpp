#pragma once

#include "botscope/attribution.hpp"
#include "botscope/blocklist.hpp"
#include "botscope/corpus.hpp"
#include "botscope/dynscan.hpp"
#include "botscope/fpdiff.hpp"
#include "botscope/metrics.hpp"
#include "botscope/parallel.hpp"
#include "botscope/report.hpp"
#include "botscope/similarity.hpp"
#include "botscope/staticscan.hpp"
#include "botscope/url.hpp"
#include "botscope/version.hpp"
#include "botscope/wilcoxon.hpp"

namespace botscope {}
