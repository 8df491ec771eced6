"""
Ponzi scheme forensics for Ethereum: bytecode similarity, scheme simulation and impact metrics
"""
