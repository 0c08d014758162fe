#pragma once

#include "mmflow/core.hpp"
#include "mmflow/diagnostics.hpp"
#include "mmflow/experiment.hpp"
#include "mmflow/prox.hpp"
#include "mmflow/scheme.hpp"
#include "mmflow/zoo.hpp"
