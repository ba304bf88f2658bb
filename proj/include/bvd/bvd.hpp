#pragma once

#include "bvd/core.hpp"
#include "bvd/divergences.hpp"
#include "bvd/catalog.hpp"
#include "bvd/centroids.hpp"
#include "bvd/decomposition.hpp"
#include "bvd/uniqueness.hpp"
#include "bvd/io.hpp"
#include "bvd/cli.hpp"
