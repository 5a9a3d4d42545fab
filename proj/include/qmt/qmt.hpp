#pragma once

// Quenched mass-transport toolkit: interacting particle simulation of
// McKean-Vlasov dynamics conditional on a common noise path, exact
// Wasserstein-2 distances between empirical laws, numerical calculus for
// functions of measures, and reachability machinery for steering conditional
// laws into target sets.

#include "qmt/budget.hpp"
#include "qmt/chain_rule.hpp"
#include "qmt/embed.hpp"
#include "qmt/errors.hpp"
#include "qmt/hamiltonian.hpp"
#include "qmt/lions.hpp"
#include "qmt/measure.hpp"
#include "qmt/measure_function.hpp"
#include "qmt/model.hpp"
#include "qmt/path.hpp"
#include "qmt/reach.hpp"
#include "qmt/simulate.hpp"
#include "qmt/target_set.hpp"
#include "qmt/verify.hpp"
#include "qmt/wasserstein.hpp"
