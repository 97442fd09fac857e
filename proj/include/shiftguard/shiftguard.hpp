#pragma once

#include "shiftguard/adam.hpp"
#include "shiftguard/autodiff.hpp"
#include "shiftguard/bundle.hpp"
#include "shiftguard/error.hpp"
#include "shiftguard/gad_model.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/io.hpp"
#include "shiftguard/kmeans.hpp"
#include "shiftguard/metrics.hpp"
#include "shiftguard/projection.hpp"
#include "shiftguard/random.hpp"
#include "shiftguard/report.hpp"
#include "shiftguard/shift.hpp"
#include "shiftguard/sparse.hpp"
#include "shiftguard/synth.hpp"
#include "shiftguard/tensor.hpp"
#include "shiftguard/tune.hpp"
