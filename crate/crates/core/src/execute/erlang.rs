//! M/M/c mean response time.

/// Mean response time of an M/M/c queue with arrival rate `lambda`,
/// `servers` servers and exponential service of mean `mean_service`.
///
/// Returns `f64::INFINITY` when the queue is unstable (`lambda >= c * mu`).
pub fn erlang_c_response_time(lambda: f64, servers: u32, mean_service: f64) -> f64 {
    assert!(servers >= 1, "need at least one server");
    assert!(mean_service > 0.0, "mean service must be positive");
    let mu = 1.0 / mean_service;
    let c = servers as f64;
    if lambda >= c * mu {
        return f64::INFINITY;
    }
    if lambda <= 0.0 {
        return mean_service;
    }
    let a = lambda / mu;
    // Erlang-B by recursion, then convert to Erlang-C
    let mut b = 1.0;
    for k in 1..=servers {
        b = a * b / (k as f64 + a * b);
    }
    let wait_prob = c * b / (c - a * (1.0 - b));
    wait_prob / (c * mu - lambda) + mean_service
}
