#pragma once

#include "mmf/error.hpp"
#include "mmf/experiment.hpp"
#include "mmf/features.hpp"
#include "mmf/jacobi.hpp"
#include "mmf/metrics.hpp"
#include "mmf/model.hpp"
#include "mmf/random.hpp"
#include "mmf/structure_builder.hpp"
#include "mmf/taxonomy.hpp"
#include "mmf/text.hpp"
