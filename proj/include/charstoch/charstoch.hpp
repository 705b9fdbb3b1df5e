#pragma once

#include <charstoch/balance.hpp>
#include <charstoch/characteristics.hpp>
#include <charstoch/errors.hpp>
#include <charstoch/expr.hpp>
#include <charstoch/io.hpp>
#include <charstoch/montecarlo.hpp>
#include <charstoch/parallel.hpp>
#include <charstoch/problem.hpp>
#include <charstoch/quadrature.hpp>
#include <charstoch/representation.hpp>

namespace charstoch {
inline constexpr const char* kVersion = "0.1.0";
}
