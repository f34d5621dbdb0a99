#include <catch2/catch_amalgamated.hpp>

#include "tandem/sim.hpp"
