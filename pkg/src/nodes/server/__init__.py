# Server nodes: noise defense, FedAvg aggregation (the round barrier) and round metrics.
