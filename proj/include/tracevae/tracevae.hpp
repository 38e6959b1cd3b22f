#pragma once

#include "tracevae/bench.hpp"
#include "tracevae/checkpoint.hpp"
#include "tracevae/config.hpp"
#include "tracevae/corpus.hpp"
#include "tracevae/generate.hpp"
#include "tracevae/grad_check.hpp"
#include "tracevae/metrics.hpp"
#include "tracevae/model.hpp"
#include "tracevae/ngram.hpp"
#include "tracevae/objectives.hpp"
#include "tracevae/optim.hpp"
#include "tracevae/train.hpp"
#include "tracevae/verify.hpp"
