#include "doctest.h"

TEST_SUITE("models") {

TEST_CASE("placeholder") { CHECK(true); }

}  // TEST_SUITE
