#pragma once

#include "freeflow/error.hpp"
#include "freeflow/geometry.hpp"
#include "freeflow/parallel.hpp"
#include "freeflow/domain.hpp"
#include "freeflow/fields.hpp"
#include "freeflow/potential.hpp"
#include "freeflow/molecule.hpp"
#include "freeflow/mincostflow.hpp"
#include "freeflow/flows.hpp"
#include "freeflow/transport.hpp"
#include "freeflow/io.hpp"
