#pragma once

#include "msplice/concatenation.hpp"
#include "msplice/errors.hpp"
#include "msplice/experiments.hpp"
#include "msplice/extended_state.hpp"
#include "msplice/functionals.hpp"
#include "msplice/io.hpp"
#include "msplice/killing.hpp"
#include "msplice/parallel.hpp"
#include "msplice/process_models.hpp"
#include "msplice/random_models.hpp"
#include "msplice/rng.hpp"
#include "msplice/state.hpp"
#include "msplice/verification.hpp"
