#pragma once

#include "fnegraph/error.hpp"
#include "fnegraph/matrix.hpp"
#include "fnegraph/tensor_io.hpp"
#include "fnegraph/fne.hpp"
#include "fnegraph/graph.hpp"
#include "fnegraph/fluidc.hpp"
#include "fnegraph/metrics.hpp"
#include "fnegraph/fixtures.hpp"
#include "fnegraph/pipeline.hpp"
