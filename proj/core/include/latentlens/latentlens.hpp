#pragma once

#include "latentlens/condgen.hpp"
#include "latentlens/error.hpp"
#include "latentlens/flow.hpp"
#include "latentlens/gmm.hpp"
#include "latentlens/lda.hpp"
#include "latentlens/learn.hpp"
#include "latentlens/mlp.hpp"
#include "latentlens/parallel.hpp"
#include "latentlens/pool.hpp"
#include "latentlens/rng.hpp"
#include "latentlens/stats.hpp"
#include "latentlens/structure.hpp"
