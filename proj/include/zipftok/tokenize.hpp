#pragma once

#include "zipftok/encode.hpp"
#include "zipftok/pair_merge.hpp"
#include "zipftok/unigram.hpp"
#include "zipftok/vocab.hpp"
