#pragma once

#include "bemgca/assembly.hpp"
#include "bemgca/cluster.hpp"
#include "bemgca/errors.hpp"
#include "bemgca/gca.hpp"
#include "bemgca/h2.hpp"
#include "bemgca/kernels.hpp"
#include "bemgca/mesh.hpp"
#include "bemgca/quadrature.hpp"
#include "bemgca/scheduler.hpp"
#include "bemgca/solver.hpp"
#include "bemgca/vec3.hpp"
