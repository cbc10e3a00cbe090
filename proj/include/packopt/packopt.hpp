#pragma once

#include "packopt/case_generator.hpp"
#include "packopt/config.hpp"
#include "packopt/error.hpp"
#include "packopt/fem.hpp"
#include "packopt/flow.hpp"
#include "packopt/io/history.hpp"
#include "packopt/io/msh.hpp"
#include "packopt/io/vtk.hpp"
#include "packopt/linear_solver.hpp"
#include "packopt/mesh.hpp"
#include "packopt/metrics.hpp"
#include "packopt/newton.hpp"
#include "packopt/shapeopt.hpp"
#include "packopt/structured.hpp"
#include "packopt/transport.hpp"
