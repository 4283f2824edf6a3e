#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hart/util/text.hpp"

namespace hart::util {
namespace {

TEST(Text, FormatDoubleRoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, 123456789.125}) {
        EXPECT_EQ(parse_double(format_double(v), "x"), v);
    }
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_double(2.0), "2");
}

TEST(Text, ParseNumbersAndBooleans) {
    EXPECT_EQ(parse_size(" 42 ", "n"), 42u);
    EXPECT_EQ(parse_int("-7", "n"), -7);
    EXPECT_EQ(parse_u64("18446744073709551615", "n"), 18446744073709551615ull);
    EXPECT_TRUE(parse_bool("yes", "b"));
    EXPECT_FALSE(parse_bool("0", "b"));
    EXPECT_THROW(parse_size("-1", "n"), std::invalid_argument);
    EXPECT_THROW(parse_size("", "n"), std::invalid_argument);
    EXPECT_THROW(parse_double("1.0x", "lr"), std::invalid_argument);
    EXPECT_THROW(parse_bool("maybe", "b"), std::invalid_argument);
    try {
        parse_int("abc", "train.epochs");
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("train.epochs"), std::string::npos);
    }
}

TEST(Text, TrimAndSplit) {
    EXPECT_EQ(trim("  a b\t\n"), "a b");
    EXPECT_EQ(trim("   "), "");
    EXPECT_EQ(split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
    EXPECT_EQ(split("", ','), (std::vector<std::string>{""}));
}

TEST(Text, FnvKnownVectors) {
    // Published FNV-1a 64-bit test vectors.
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

}  // namespace
}  // namespace hart::util
