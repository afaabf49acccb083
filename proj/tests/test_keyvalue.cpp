#include <doctest.h>

#include "tsformer/errors.hpp"
#include "tsformer/keyvalue.hpp"

using namespace tsformer;

TEST_CASE("key-value parsing") {
    const auto kv = KeyValues::parse("# comment\n\nd_model = 32\nlr=3e-3\nname =  a b \nflag = true\nlist = 1, 7 ,15\nd_model = 64\n");
    CHECK(kv.get_size("d_model", 0) == 64);
    CHECK(kv.get_double("lr", 0) == 3e-3);
    CHECK(kv.get_string("name", "") == "a b");
    CHECK(kv.get_bool("flag", false));
    CHECK(kv.get_list("list") == std::vector<std::string>{"1", "7", "15"});
    CHECK(kv.get_int("absent", -4) == -4);
    CHECK(kv.unknown_keys({"d_model", "lr", "name", "flag"}) == std::vector<std::string>{"list"});
    CHECK_THROWS_AS(KeyValues::parse("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(kv.get_size("lr", 0), ConfigError);
    CHECK_THROWS_AS(KeyValues::parse("x = -3\n").get_size("x", 0), ConfigError);
    CHECK_THROWS_AS(kv.get_bool("name", false), ConfigError);
    CHECK_THROWS_AS(KeyValues::load("/nonexistent/file.cfg"), IoError);
}

TEST_CASE("number helpers") {
    CHECK(parse_double(" 2.5 ", "x") == 2.5);
    CHECK_THROWS_AS(parse_double("2.5x", "x"), ConfigError);
    CHECK(parse_int("-12", "x") == -12);
    CHECK_THROWS_AS(parse_int("1.5", "x"), ConfigError);
    CHECK(split_list("a,,b ") == std::vector<std::string>{"a", "b"});
    CHECK(trim("\t x \n") == "x");
}
