#pragma once

#include "mspld/cli.hpp"
#include "mspld/config.hpp"
#include "mspld/curriculum.hpp"
#include "mspld/data_model.hpp"
#include "mspld/detector.hpp"
#include "mspld/engine.hpp"
#include "mspld/error.hpp"
#include "mspld/eval.hpp"
#include "mspld/geometry.hpp"
#include "mspld/oracle.hpp"
#include "mspld/parallel.hpp"
#include "mspld/rng.hpp"
#include "mspld/selector.hpp"
