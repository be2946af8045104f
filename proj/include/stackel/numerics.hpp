#pragma once

#include "stackel/error.hpp"
#include "stackel/numerics/eigen2.hpp"
#include "stackel/numerics/monte_carlo.hpp"
#include "stackel/numerics/ode.hpp"
#include "stackel/numerics/quadrature.hpp"
#include "stackel/numerics/root.hpp"
#include "stackel/numerics/time_grid.hpp"
