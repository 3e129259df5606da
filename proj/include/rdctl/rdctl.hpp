#pragma once

#include "rdctl/analysis.hpp"
#include "rdctl/config.hpp"
#include "rdctl/cost.hpp"
#include "rdctl/dynamics.hpp"
#include "rdctl/error.hpp"
#include "rdctl/noise.hpp"
#include "rdctl/policies.hpp"
#include "rdctl/rbf.hpp"
#include "rdctl/riccati.hpp"
#include "rdctl/rng.hpp"
#include "rdctl/serialization.hpp"
#include "rdctl/spectral.hpp"
#include "rdctl/training.hpp"
