#pragma once

#include "coopsim/codec.hpp"
#include "coopsim/comm.hpp"
#include "coopsim/dataset_io.hpp"
#include "coopsim/errors.hpp"
#include "coopsim/eval.hpp"
#include "coopsim/feature_map.hpp"
#include "coopsim/geom.hpp"
#include "coopsim/lidar.hpp"
#include "coopsim/parallel.hpp"
#include "coopsim/perception.hpp"
#include "coopsim/rng.hpp"
#include "coopsim/scenario.hpp"
#include "coopsim/svg.hpp"
