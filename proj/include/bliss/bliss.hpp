#pragma once

#include "bliss/core_math.hpp"
#include "bliss/data_io.hpp"
#include "bliss/error.hpp"
#include "bliss/eval.hpp"
#include "bliss/memory_bank.hpp"
#include "bliss/parallel.hpp"
#include "bliss/scoring.hpp"
#include "bliss/synth.hpp"
