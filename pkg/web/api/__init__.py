"""Agent API routers"""
