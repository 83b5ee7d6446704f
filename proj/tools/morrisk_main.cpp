#include "morrisk/market_data.hpp"
#include <cstdio>
int main() { std::puts("morrisk: cli under construction"); return 0; }
