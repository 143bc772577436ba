# Graph nodes: clients/ (local training, covert embedding, receiver recording) and server/ (noise, aggregation, metrics).
