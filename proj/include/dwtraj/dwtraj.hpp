#pragma once

#include "dwtraj/classical_model.hpp"
#include "dwtraj/csv.hpp"
#include "dwtraj/errors.hpp"
#include "dwtraj/experiment.hpp"
#include "dwtraj/fock_space.hpp"
#include "dwtraj/master_oracle.hpp"
#include "dwtraj/rng.hpp"
#include "dwtraj/statistics.hpp"
#include "dwtraj/trajectory_engine.hpp"
#include "dwtraj/tridiagonal.hpp"
