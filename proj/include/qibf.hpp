#pragma once

#include "qibf/error.hpp"
#include "qibf/rng.hpp"
#include "qibf/normal.hpp"
#include "qibf/model.hpp"
#include "qibf/quantizer.hpp"
#include "qibf/grid.hpp"
#include "qibf/kalman.hpp"
#include "qibf/schedule.hpp"
#include "qibf/receiver_k.hpp"
#include "qibf/receiver_r.hpp"
#include "qibf/mlq.hpp"
#include "qibf/particle.hpp"
#include "qibf/oracle.hpp"
#include "qibf/config.hpp"
#include "qibf/experiment.hpp"
#include "qibf/acceptance.hpp"
