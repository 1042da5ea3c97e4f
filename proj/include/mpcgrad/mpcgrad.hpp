#pragma once

#include "mpcgrad/actor.hpp"
#include "mpcgrad/critic.hpp"
#include "mpcgrad/envs.hpp"
#include "mpcgrad/exploration.hpp"
#include "mpcgrad/kkt_sensitivity.hpp"
#include "mpcgrad/mpc.hpp"
#include "mpcgrad/nlp.hpp"
#include "mpcgrad/projection.hpp"
#include "mpcgrad/qp.hpp"
#include "mpcgrad/rmpc.hpp"
#include "mpcgrad/rng.hpp"
#include "mpcgrad/solver_corpus.hpp"
#include "mpcgrad/trajectory_sensitivity.hpp"
#include "mpcgrad/value_iteration.hpp"
