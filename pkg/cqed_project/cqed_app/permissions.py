from rest_framework import permissions


# Only staff may delete recorded runs
class IsAdmin(permissions.BasePermission):
    def has_permission(self, request, view):
        return bool(request.user and request.user.is_staff)
