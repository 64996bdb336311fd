#pragma once

// Mixed-autonomy platoon control: everything in one include.

#include "platoon/error.hpp"
#include "platoon/model.hpp"
#include "platoon/grid.hpp"
#include "platoon/interp.hpp"
#include "platoon/leader.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/objective.hpp"
#include "platoon/adjoint.hpp"
#include "platoon/optimizer.hpp"
#include "platoon/csv.hpp"
#include "platoon/scenario.hpp"
