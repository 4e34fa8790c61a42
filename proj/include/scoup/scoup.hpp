#pragma once

#include "scoup/error.hpp"
#include "scoup/rng.hpp"
#include "scoup/tensor.hpp"
#include "scoup/model.hpp"
#include "scoup/linalg.hpp"
#include "scoup/als.hpp"
#include "scoup/sampler.hpp"
#include "scoup/merger.hpp"
#include "scoup/missing.hpp"
#include "scoup/driver.hpp"
#include "scoup/eval.hpp"
#include "scoup/synthetic.hpp"
#include "scoup/io.hpp"
