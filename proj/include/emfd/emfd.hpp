#pragma once

#include "emfd/config.hpp"
#include "emfd/csv.hpp"
#include "emfd/emissions.hpp"
#include "emfd/error.hpp"
#include "emfd/explain/brute_force.hpp"
#include "emfd/explain/interpretation.hpp"
#include "emfd/explain/tree_shap.hpp"
#include "emfd/ingest.hpp"
#include "emfd/learn/dataset.hpp"
#include "emfd/learn/forest.hpp"
#include "emfd/learn/gbt.hpp"
#include "emfd/learn/metrics.hpp"
#include "emfd/learn/tree.hpp"
#include "emfd/synth.hpp"
#include "emfd/timeutil.hpp"
#include "emfd/traffic.hpp"
