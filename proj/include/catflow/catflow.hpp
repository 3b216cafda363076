#pragma once

#include "catflow/audit.hpp"
#include "catflow/comparison.hpp"
#include "catflow/constants.hpp"
#include "catflow/diagnostics.hpp"
#include "catflow/dirichlet.hpp"
#include "catflow/energy.hpp"
#include "catflow/errors.hpp"
#include "catflow/flow.hpp"
#include "catflow/io.hpp"
#include "catflow/rng.hpp"
#include "catflow/sampling.hpp"
#include "catflow/surface_domain.hpp"
#include "catflow/target_space.hpp"
