#include <stdio.h>
#include "byrd_nafl.h"

#define CHECK(cond)                                      \
    do {                                                 \
        if (!(cond)) {                                   \
            printf("failed: %s (line %d)\n", #cond, __LINE__); \
            return 1;                                    \
        }                                                \
    } while (0)

int main(void) {
    double grads[6] = {1.0, 4.0, 2.0, 5.0, 9.0, 6.0};
    double agg[2];
    CHECK(byrd_aggregate(BYRD_RULE_CW_MED, grads, 3, 2, 0, agg) == BYRD_STATUS_OK);
    CHECK(agg[0] == 2.0 && agg[1] == 5.0);
    CHECK(byrd_aggregate(BYRD_RULE_KRUM, grads, 3, 2, 1, agg) == BYRD_STATUS_INVALID_ARGUMENT);
    CHECK(byrd_last_error() != NULL);

    double x0[2] = {1.0, 1.0};
    ByrdServer *server = NULL;
    CHECK(byrd_server_new(x0, 2, 0.5, 0.0, &server) == BYRD_STATUS_OK);
    CHECK(byrd_server_step(server, agg, 2) == BYRD_STATUS_OK);
    double x[2];
    CHECK(byrd_server_params(server, x, 2) == BYRD_STATUS_OK);
    CHECK(x[0] == 0.0 && x[1] == -1.5);
    CHECK(byrd_server_iteration(server) == 1);
    byrd_server_free(server);

    ByrdTheoremParams tp = {0.0, 1.0, 1.0, 1.0, 0.0, 0.1};
    double v = 0.0;
    CHECK(byrd_error_floor_bound(&tp, &v) == BYRD_STATUS_OK && v == 0.2);
    printf("ok\n");
    return 0;
}
