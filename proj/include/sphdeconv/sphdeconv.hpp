#pragma once

#include "errors.hpp"
#include "sphere_geom.hpp"
#include "harmonics.hpp"
#include "error_model.hpp"
#include "rot_fourier.hpp"
#include "sampling.hpp"
#include "estimators.hpp"
#include "inference.hpp"
#include "simulation.hpp"
#include "io.hpp"
