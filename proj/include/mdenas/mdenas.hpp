#pragma once

#include "mdenas/config.hpp"
#include "mdenas/distribution.hpp"
#include "mdenas/engine.hpp"
#include "mdenas/evaluator.hpp"
#include "mdenas/io.hpp"
#include "mdenas/operations.hpp"
#include "mdenas/random.hpp"
#include "mdenas/ranking.hpp"
#include "mdenas/search_space.hpp"
