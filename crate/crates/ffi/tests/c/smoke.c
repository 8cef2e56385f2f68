#include <stdio.h>
#include <math.h>
#include "honeycomb.h"

int main(void) {
    HcEnvironment *env = NULL;
    int8_t table[2] = {1, -1};
    if (hc_env_new_periodic(table, 2, &env) != HC_STATUS_OK) return 1;

    double p = 0.0;
    if (hc_return_prob_exact(1, &p) != HC_STATUS_OK || fabs(p - 2.0 / 3.0) > 1e-15) return 2;

    HcJointPn j;
    if (hc_joint_pn(env, 20, 1e-12, &j) != HC_STATUS_OK || !(j.p > 0.0)) return 3;

    HcWalkSummary w;
    if (hc_simulate_walk(env, 1000, 5, &w) != HC_STATUS_OK || w.n_steps != 1000) return 4;

    int8_t bad[3] = {1, -1, 1};
    HcEnvironment *other = NULL;
    if (hc_env_new_periodic(bad, 3, &other) != HC_STATUS_INVALID_ARGUMENT) return 5;
    if (hc_last_error() == NULL) return 6;

    hc_env_free(env);
    printf("ok %s\n", hc_version());
    return 0;
}
