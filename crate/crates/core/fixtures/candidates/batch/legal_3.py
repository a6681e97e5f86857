def adjust_learning_rate(step_num, log_objective, log_objective_prev, overflow, log_lambda, learning_rate_prev, log_gradient_norm):
    return 0.55 if overflow > 0.3 else 0.5
