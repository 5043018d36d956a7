#include <catch2/catch_amalgamated.hpp>
#include "capkit/capkit.hpp"
