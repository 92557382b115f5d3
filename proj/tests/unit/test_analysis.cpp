#include "doctest.h"

TEST_SUITE("analysis") {

TEST_CASE("placeholder") { CHECK(true); }

}  // TEST_SUITE
