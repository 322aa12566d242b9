#pragma once

// Umbrella header for the library. The CLI front end lives in pheno/cli.hpp
// and is not pulled in here so library users do not inherit the CLI11
// dependency.

#include "pheno/autodiff.hpp"
#include "pheno/chill_tables.hpp"
#include "pheno/common.hpp"
#include "pheno/datagen.hpp"
#include "pheno/domain.hpp"
#include "pheno/eval.hpp"
#include "pheno/hybrid.hpp"
#include "pheno/io.hpp"
#include "pheno/mechanistic.hpp"
#include "pheno/parallel.hpp"
