# Client nodes: benign local training, sender embedding and receiver recording.
